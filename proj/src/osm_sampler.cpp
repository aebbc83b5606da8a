#include "tov/osm_sampler.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <set>
#include <sstream>

#include <expat.h>

#include "tov/error.hpp"

namespace tov::osm {

namespace {

std::int64_t to_id(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::MalformedXml, std::string("bad ") + what + " id '" + s + "'");
  }
}

double to_coord(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::MalformedXml, std::string("bad ") + what + " '" + s + "'");
  }
}

using Attributes = std::map<std::string, std::string>;

Attributes collect(const XML_Char** atts) {
  Attributes out;
  for (int i = 0; atts[i] != nullptr; i += 2) out[atts[i]] = atts[i + 1];
  return out;
}

std::string required(const Attributes& a, const char* name, const char* what) {
  auto it = a.find(name);
  if (it == a.end()) throw Error(Errc::MalformedXml, std::string(what) + " element without '" + name + "' attribute");
  return it->second;
}

std::string optional_attr(const Attributes& a, const char* name) {
  auto it = a.find(name);
  return it == a.end() ? std::string() : it->second;
}

// Streaming builder driven by expat callbacks. Exceptions must not cross the
// C parser, so the first failure is parked here and rethrown after parsing.
struct ParseState {
  XML_Parser parser = nullptr;
  Document doc;
  std::vector<Way> pending_ways;
  int depth = 0;
  enum class Open { None, Node, Way, Relation } open = Open::None;
  Node node;
  Way way;
  Relation relation;
  std::exception_ptr failure;

  TagMap* current_tags() {
    switch (open) {
      case Open::Node: return &node.tags;
      case Open::Way: return &way.tags;
      case Open::Relation: return &relation.tags;
      default: return nullptr;
    }
  }

  void start(const std::string& name, const Attributes& a) {
    ++depth;
    if (depth == 1) {
      if (name != "osm") throw Error(Errc::MalformedXml, "root element is <" + name + ">, expected <osm>");
      const auto version = optional_attr(a, "version");
      if (!version.empty() && version != "0.6") {
        throw Error(Errc::UnsupportedVersion, "OSM API version '" + version + "', expected 0.6");
      }
      return;
    }
    if (depth == 2) {
      if (name == "node") {
        open = Open::Node;
        node = Node{};
        node.id = to_id(required(a, "id", "node"), "node");
        node.lat = to_coord(required(a, "lat", "node"), "latitude");
        node.lon = to_coord(required(a, "lon", "node"), "longitude");
        node.timestamp = optional_attr(a, "timestamp");
      } else if (name == "way") {
        open = Open::Way;
        way = Way{};
        way.id = to_id(required(a, "id", "way"), "way");
        way.timestamp = optional_attr(a, "timestamp");
      } else if (name == "relation") {
        open = Open::Relation;
        relation = Relation{};
        relation.id = to_id(required(a, "id", "relation"), "relation");
        relation.timestamp = optional_attr(a, "timestamp");
      }
      return;
    }
    if (depth == 3 && open != Open::None) {
      if (name == "tag") {
        (*current_tags())[required(a, "k", "tag")] = required(a, "v", "tag");
      } else if (name == "nd" && open == Open::Way) {
        way.refs.push_back(to_id(required(a, "ref", "nd"), "nd"));
      } else if (name == "member" && open == Open::Relation) {
        relation.members.push_back({required(a, "type", "member"), to_id(required(a, "ref", "member"), "member"),
                                    optional_attr(a, "role")});
      }
    }
  }

  void end() {
    if (depth == 2) {
      switch (open) {
        case Open::Node:
          if (!doc.nodes.emplace(node.id, node).second) {
            throw Error(Errc::MalformedXml, "duplicate node id " + std::to_string(node.id));
          }
          break;
        case Open::Way: pending_ways.push_back(std::move(way)); break;
        case Open::Relation:
          if (!doc.relations.emplace(relation.id, relation).second) {
            throw Error(Errc::MalformedXml, "duplicate relation id " + std::to_string(relation.id));
          }
          break;
        case Open::None: break;
      }
      open = Open::None;
    }
    --depth;
  }

  void fail() {
    failure = std::current_exception();
    XML_StopParser(parser, XML_FALSE);
  }
};

void XMLCALL on_start(void* user, const XML_Char* name, const XML_Char** atts) {
  auto* st = static_cast<ParseState*>(user);
  if (st->failure) return;
  try {
    st->start(name, collect(atts));
  } catch (...) {
    st->fail();
  }
}

void XMLCALL on_end(void* user, const XML_Char*) {
  auto* st = static_cast<ParseState*>(user);
  if (st->failure) return;
  try {
    st->end();
  } catch (...) {
    st->fail();
  }
}

void escape(std::ostream& out, std::string_view s) {
  for (char c : s) {
    switch (c) {
      case '&': out << "&amp;"; break;
      case '<': out << "&lt;"; break;
      case '>': out << "&gt;"; break;
      case '"': out << "&quot;"; break;
      case '\'': out << "&apos;"; break;
      default: out << c;
    }
  }
}

void write_tags(std::ostream& out, const TagMap& tags) {
  for (const auto& [k, v] : tags) {
    out << "    <tag k=\"";
    escape(out, k);
    out << "\" v=\"";
    escape(out, v);
    out << "\"/>\n";
  }
}

void write_timestamp(std::ostream& out, const std::string& ts) {
  if (ts.empty()) return;
  out << " timestamp=\"";
  escape(out, ts);
  out << '"';
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  return std::string(s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1));
}

}  // namespace

Document parse_osm(std::string_view xml) {
  ParseState st;
  std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> parser(XML_ParserCreate(nullptr),
                                                                                      &XML_ParserFree);
  if (!parser) throw Error(Errc::MalformedXml, "cannot create XML parser");
  st.parser = parser.get();
  XML_SetUserData(parser.get(), &st);
  XML_SetElementHandler(parser.get(), on_start, on_end);
  const auto status = XML_Parse(parser.get(), xml.data(), static_cast<int>(xml.size()), XML_TRUE);
  if (st.failure) std::rethrow_exception(st.failure);
  if (status == XML_STATUS_ERROR) {
    throw Error(Errc::MalformedXml, "line " + std::to_string(XML_GetCurrentLineNumber(parser.get())) + ", column " +
                                        std::to_string(XML_GetCurrentColumnNumber(parser.get())) + ": " +
                                        XML_ErrorString(XML_GetErrorCode(parser.get())));
  }

  Document doc = std::move(st.doc);
  for (auto& w : st.pending_ways) {
    const bool resolved = std::all_of(w.refs.begin(), w.refs.end(), [&](auto ref) { return doc.nodes.count(ref) > 0; });
    if (!resolved || w.refs.empty()) {
      ++doc.skipped_unresolved;
      continue;
    }
    if (!doc.ways.emplace(w.id, w).second) {
      throw Error(Errc::MalformedXml, "duplicate way id " + std::to_string(w.id));
    }
  }
  std::set<std::string> stamps;
  for (const auto& [id, n] : doc.nodes)
    if (!n.timestamp.empty()) stamps.insert(n.timestamp);
  for (const auto& [id, w] : doc.ways)
    if (!w.timestamp.empty()) stamps.insert(w.timestamp);
  for (const auto& [id, r] : doc.relations)
    if (!r.timestamp.empty()) stamps.insert(r.timestamp);
  if (!stamps.empty()) doc.timestamp_range = std::make_pair(*stamps.begin(), *stamps.rbegin());
  return doc;
}

Document load_osm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open OSM file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_osm(ss.str());
}

std::string serialize_osm(const Document& doc) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osm version=\"0.6\">\n";
  for (const auto& [id, n] : doc.nodes) {
    out << "  <node id=\"" << id << "\" lat=\"" << n.lat << "\" lon=\"" << n.lon << '"';
    write_timestamp(out, n.timestamp);
    out << ">\n";
    write_tags(out, n.tags);
    out << "  </node>\n";
  }
  for (const auto& [id, w] : doc.ways) {
    out << "  <way id=\"" << id << '"';
    write_timestamp(out, w.timestamp);
    out << ">\n";
    for (auto ref : w.refs) out << "    <nd ref=\"" << ref << "\"/>\n";
    write_tags(out, w.tags);
    out << "  </way>\n";
  }
  for (const auto& [id, r] : doc.relations) {
    out << "  <relation id=\"" << id << '"';
    write_timestamp(out, r.timestamp);
    out << ">\n";
    for (const auto& m : r.members) {
      out << "    <member type=\"";
      escape(out, m.type);
      out << "\" ref=\"" << m.ref << "\" role=\"";
      escape(out, m.role);
      out << "\"/>\n";
    }
    write_tags(out, r.tags);
    out << "  </relation>\n";
  }
  out << "</osm>\n";
  return out.str();
}

RuleTable::RuleTable(std::vector<Rule> rules, const Taxonomy& taxonomy) : rules_(std::move(rules)), taxonomy_(taxonomy) {
  for (const auto& r : rules_) {
    const auto cat = taxonomy_.find(r.category);
    if (!cat || cat->kind != SourceKind::ManMade) {
      throw Error(Errc::UnknownCategory, "rule target '" + r.category + "' is not a man-made category");
    }
  }
}

std::string normalise_tag_value(std::string_view value) {
  std::string out;
  out.reserve(value.size());
  for (char c : value) out.push_back(c == '_' ? ' ' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return trim(out);
}

RuleTable parse_rule_table(std::string_view text, const Taxonomy& taxonomy) {
  std::vector<Rule> rules;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto arrow = line.find("=>");
    if (arrow == std::string::npos) {
      throw Error(Errc::MalformedRuleTable, "line " + std::to_string(line_no) + ": expected 'pattern => Category'");
    }
    Rule r{normalise_tag_value(line.substr(0, arrow)), trim(line.substr(arrow + 2))};
    if (r.pattern.empty() || r.category.empty()) {
      throw Error(Errc::MalformedRuleTable, "line " + std::to_string(line_no) + ": empty pattern or category");
    }
    rules.push_back(std::move(r));
  }
  return RuleTable(std::move(rules), taxonomy);
}

RuleTable load_rule_table(const std::filesystem::path& path, const Taxonomy& taxonomy) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open rule table " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_rule_table(ss.str(), taxonomy);
}

std::filesystem::path default_rule_table_path() { return std::filesystem::path(TOV_DATA_DIR) / "osm_rules.txt"; }

std::optional<SceneCategory> associate_category(const TagMap& tags, const RuleTable& rules) {
  std::set<std::string> values;
  for (const auto& [k, v] : tags) values.insert(normalise_tag_value(v));
  for (const auto& rule : rules.rules()) {
    if (values.count(rule.pattern)) return rules.taxonomy().find(rule.category);
  }
  return std::nullopt;
}

std::optional<geo::Rect> element_window(const Geometry& elem, const geo::GeoRaster& image, const WindowParams& params) {
  if (elem.coords.empty()) return std::nullopt;
  const int w = image.width(), h = image.height();
  int c0 = 0, r0 = 0, c1 = 0, r1 = 0;  // half-open pixel bounds before clamping
  if (elem.point) {
    auto [fc, fr] = image.geo_to_pixel_fractional(elem.coords[0].first, elem.coords[0].second);
    const double col = std::floor(fc), row = std::floor(fr);
    if (!(col >= 0 && col < w && row >= 0 && row < h)) return std::nullopt;
    const int half = static_cast<int>(std::lround(params.point_pad * params.sample_side));
    c0 = static_cast<int>(col) - half;
    r0 = static_cast<int>(row) - half;
    c1 = static_cast<int>(col) + half;
    r1 = static_cast<int>(row) + half;
  } else {
    double min_c = INFINITY, min_r = INFINITY, max_c = -INFINITY, max_r = -INFINITY;
    for (const auto& [x, y] : elem.coords) {
      auto [fc, fr] = image.geo_to_pixel_fractional(x, y);
      min_c = std::min(min_c, fc);
      max_c = std::max(max_c, fc);
      min_r = std::min(min_r, fr);
      max_r = std::max(max_r, fr);
    }
    // Keep far-away geometry from overflowing int before clamping.
    const double lim = 4.0 * std::max(w, h) + 1e6;
    const double fc0 = std::floor(std::clamp(min_c, -lim, lim)), fc1 = std::floor(std::clamp(max_c, -lim, lim)) + 1;
    const double fr0 = std::floor(std::clamp(min_r, -lim, lim)), fr1 = std::floor(std::clamp(max_r, -lim, lim)) + 1;
    const double pad_c = std::round(params.area_pad * (fc1 - fc0));
    const double pad_r = std::round(params.area_pad * (fr1 - fr0));
    c0 = static_cast<int>(fc0 - pad_c);
    c1 = static_cast<int>(fc1 + pad_c);
    r0 = static_cast<int>(fr0 - pad_r);
    r1 = static_cast<int>(fr1 + pad_r);
  }
  c0 = std::max(c0, 0);
  r0 = std::max(r0, 0);
  c1 = std::min(c1, w);
  r1 = std::min(r1, h);
  if (c1 <= c0 || r1 <= r0) return std::nullopt;
  if (c1 - c0 < params.min_side || r1 - r0 < params.min_side) return std::nullopt;
  return geo::Rect{c0, r0, c1 - c0, r1 - r0};
}

bool TimeFilter::admits(const std::string& timestamp) const {
  if (timestamp.empty()) return true;
  if (!from.empty() && timestamp < from) return false;
  if (!to.empty() && timestamp > to) return false;
  return true;
}

namespace {

void add_way_coords(const Document& doc, const Way& way, Geometry& g) {
  for (auto ref : way.refs) {
    const auto& n = doc.nodes.at(ref);
    g.coords.emplace_back(n.lon, n.lat);
  }
}

Geometry relation_geometry(const Document& doc, const Relation& rel) {
  Geometry g;
  for (const auto& m : rel.members) {
    if (m.type == "node") {
      if (auto it = doc.nodes.find(m.ref); it != doc.nodes.end()) g.coords.emplace_back(it->second.lon, it->second.lat);
    } else if (m.type == "way") {
      if (auto it = doc.ways.find(m.ref); it != doc.ways.end()) add_way_coords(doc, it->second, g);
    }
  }
  return g;
}

}  // namespace

std::vector<Sample> sample_manmade(const geo::GeoRaster& image, const Document& doc, const RuleTable& rules,
                                   const WindowParams& params, const std::string& image_id, const TimeFilter& time) {
  std::vector<Sample> out;
  std::set<std::pair<geo::Rect, std::string>> seen;
  auto emit = [&](const TagMap& tags, const std::string& ts, const Geometry& g) {
    if (tags.empty() || !time.admits(ts)) return;
    const auto cat = associate_category(tags, rules);
    if (!cat) return;
    const auto win = element_window(g, image, params);
    if (!win || !seen.emplace(*win, cat->name).second) return;
    out.push_back({image_id, *win, cat->name, SourceKind::ManMade, std::nullopt});
  };
  for (const auto& [id, n] : doc.nodes) emit(n.tags, n.timestamp, Geometry{{{n.lon, n.lat}}, true});
  for (const auto& [id, w] : doc.ways) {
    Geometry g;
    add_way_coords(doc, w, g);
    emit(w.tags, w.timestamp, g);
  }
  for (const auto& [id, r] : doc.relations) emit(r.tags, r.timestamp, relation_geometry(doc, r));
  return out;
}

}  // namespace tov::osm
