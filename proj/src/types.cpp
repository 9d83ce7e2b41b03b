#include "mind/types.hpp"

namespace mind {

const char* modality_tag(Modality m) {
  switch (m) {
    case Modality::Visual: return "V";
    case Modality::Audio: return "A";
    case Modality::Text: return "T";
  }
  return "?";
}

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::Visual: return "visual";
    case Modality::Audio: return "audio";
    case Modality::Text: return "text";
  }
  return "?";
}

Modality modality_from_tag(const std::string& tag) {
  if (tag == "V" || tag == "visual") return Modality::Visual;
  if (tag == "A" || tag == "audio") return Modality::Audio;
  if (tag == "T" || tag == "text") return Modality::Text;
  throw ConfigError("unknown modality tag: " + tag);
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "valid" || name == "validation" || name == "val")
    return Split::Valid;
  if (name == "test") return Split::Test;
  throw ConfigError("unknown split name: " + name);
}

}  // namespace mind
