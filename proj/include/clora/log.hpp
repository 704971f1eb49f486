#pragma once

#include <string>

namespace clora {

enum class LogLevel { error = 0, info = 1, debug = 2 };

/// Level from CLORA_LOG (error | info | debug); defaults to error.
LogLevel log_level();
void set_log_level(LogLevel level);

void log_error(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace clora
