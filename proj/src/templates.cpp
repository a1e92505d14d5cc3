#include "tomb/templates.hpp"

#include <stdexcept>

namespace tomb::templates {

std::string_view get(std::string_view name) {
  for (const auto& entry : detail::entries()) {
    if (entry.name == name) {
      std::string_view text = entry.text;
      while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.remove_suffix(1);
      return text;
    }
  }
  throw std::out_of_range("no prompt template named " + std::string(name));
}

std::string render(std::string_view name, const std::map<std::string, std::string>& vars) {
  const std::string_view text = get(name);
  std::string out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t open = text.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    const std::size_t close = text.find("}}", open + 2);
    if (close == std::string_view::npos) throw std::out_of_range("unterminated placeholder in " + std::string(name));
    out.append(text.substr(pos, open - pos));
    const std::string key(text.substr(open + 2, close - open - 2));
    auto it = vars.find(key);
    if (it == vars.end()) throw std::out_of_range("template " + std::string(name) + " needs {{" + key + "}}");
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

std::string source_path(std::string_view name) {
  return "template/" + std::string(kVersion) + "/" + std::string(name);
}

}  // namespace tomb::templates
