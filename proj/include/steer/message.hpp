#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace steer {

enum class Role { System, User, Assistant };

std::string_view role_name(Role r);
Role role_from_string(std::string_view s);

struct ChatMessage {
    Role role = Role::User;
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

using MessageList = std::vector<ChatMessage>;

// Collapses a chat sequence into a single user message for completion-style
// models: the system text is prepended as plain text.
MessageList flatten_for_completion(const MessageList& messages);

} // namespace steer
