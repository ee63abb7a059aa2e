#include "steer/message.hpp"

#include <stdexcept>

namespace steer {

std::string_view role_name(Role r) {
    switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    }
    return "user";
}

Role role_from_string(std::string_view s) {
    if (s == "system") return Role::System;
    if (s == "user") return Role::User;
    if (s == "assistant") return Role::Assistant;
    throw std::invalid_argument("unknown message role '" + std::string(s) + "'");
}

MessageList flatten_for_completion(const MessageList& messages) {
    std::string text;
    for (const auto& m : messages) {
        if (!text.empty())
            text += "\n\n";
        text += m.content;
    }
    return {ChatMessage{Role::User, std::move(text)}};
}

} // namespace steer
