#include "nesttune/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <deque>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace nesttune {

namespace {

bool valid_extent(int e) {
    return e >= 4 && e <= 4096 && std::has_single_bit(static_cast<unsigned>(e));
}

}  // namespace

Pipeline Pipeline::build(std::string name, std::vector<Stage> stages,
                         std::vector<std::pair<int, int>> edges, int output_stage) {
    Pipeline p;
    p.name_ = std::move(name);
    p.stages_ = std::move(stages);
    p.edges_ = std::move(edges);
    p.output_stage_ = output_stage;

    const int n = p.stage_count();
    if (n == 0) throw ValidationError("pipeline '" + p.name_ + "' has no stages");
    if (p.name_.empty()) throw ValidationError("pipeline name is empty");

    std::unordered_set<std::string> ids;
    for (const Stage& s : p.stages_) {
        if (s.id.empty()) throw ValidationError("stage with empty id");
        if (!ids.insert(s.id).second) throw ValidationError("duplicate stage id '" + s.id + "'");
        if (!valid_extent(s.extent_outer) || !valid_extent(s.extent_inner)) {
            throw ValidationError("stage '" + s.id +
                                  "': extents must be powers of two in [4, 4096]");
        }
        if (s.arithmetic_intensity < 1) {
            throw ValidationError("stage '" + s.id + "': arithmetic intensity must be >= 1");
        }
        if (s.footprint_bytes_per_point < 1) {
            throw ValidationError("stage '" + s.id + "': bytes per point must be >= 1");
        }
    }

    if (output_stage < 0 || output_stage >= n) throw ValidationError("output stage out of range");

    p.consumers_.assign(static_cast<std::size_t>(n), {});
    p.producers_.assign(static_cast<std::size_t>(n), {});
    std::unordered_set<std::uint64_t> seen_edges;
    for (auto [prod, cons] : p.edges_) {
        if (prod < 0 || prod >= n || cons < 0 || cons >= n) {
            throw ValidationError("edge references unknown stage");
        }
        if (prod == cons) {
            throw ValidationError("self edge on stage '" + p.stages_[prod].id + "'");
        }
        const std::uint64_t key =
            (static_cast<std::uint64_t>(prod) << 32) | static_cast<std::uint32_t>(cons);
        if (!seen_edges.insert(key).second) {
            throw ValidationError("duplicate edge " + p.stages_[prod].id + " -> " +
                                  p.stages_[cons].id);
        }
        p.consumers_[static_cast<std::size_t>(prod)].push_back(cons);
        p.producers_[static_cast<std::size_t>(cons)].push_back(prod);
    }

    // Stable Kahn topological sort (producers before consumers, ties by
    // stage index). Detects cycles.
    std::vector<int> indegree(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        indegree[static_cast<std::size_t>(i)] =
            static_cast<int>(p.producers_[static_cast<std::size_t>(i)].size());
    }
    std::vector<int> topo;
    topo.reserve(static_cast<std::size_t>(n));
    std::vector<bool> queued(static_cast<std::size_t>(n), false);
    for (int pass = 0; static_cast<int>(topo.size()) < n; ++pass) {
        int next = -1;
        for (int i = 0; i < n; ++i) {
            if (!queued[static_cast<std::size_t>(i)] && indegree[static_cast<std::size_t>(i)] == 0) {
                next = i;
                break;
            }
        }
        if (next < 0) {
            throw ValidationError("pipeline '" + p.name_ + "' contains a cycle");
        }
        queued[static_cast<std::size_t>(next)] = true;
        topo.push_back(next);
        for (int c : p.consumers_[static_cast<std::size_t>(next)]) {
            --indegree[static_cast<std::size_t>(c)];
        }
    }

    if (!p.consumers_[static_cast<std::size_t>(output_stage)].empty()) {
        throw ValidationError("output stage '" + p.stages_[output_stage].id +
                              "' must have no consumers");
    }
    for (int i = 0; i < n; ++i) {
        if (i != output_stage && p.consumers_[static_cast<std::size_t>(i)].empty()) {
            throw ValidationError("stage '" + p.stages_[i].id +
                                  "' has no consumers and is not the output");
        }
    }

    p.schedule_order_.assign(topo.rbegin(), topo.rend());
    p.schedule_pos_.assign(static_cast<std::size_t>(n), -1);
    for (int k = 0; k < n; ++k) {
        p.schedule_pos_[static_cast<std::size_t>(p.schedule_order_[static_cast<std::size_t>(k)])] = k;
    }
    // The output stage is the unique sink, so the reversed topological order
    // always starts there.
    if (p.schedule_order_.front() != output_stage) {
        throw ValidationError("internal: schedule order does not start at the output stage");
    }
    return p;
}

int Pipeline::find_stage(const std::string& id) const {
    for (int i = 0; i < stage_count(); ++i) {
        if (stages_[static_cast<std::size_t>(i)].id == id) return i;
    }
    return -1;
}

namespace {

std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> tokens;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) {
        if (tok[0] == '#') break;
        tokens.push_back(tok);
    }
    return tokens;
}

int parse_int(const std::string& tok, int line_no, const char* what) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ParseError(line_no, std::string("expected integer for ") + what + ", got '" + tok +
                                      "'");
    }
}

}  // namespace

Pipeline load_pipeline(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;

    std::string name;
    bool saw_pipeline = false;
    std::vector<Stage> stages;
    std::unordered_map<std::string, int> index_of;
    std::vector<std::pair<std::string, std::string>> edge_ids;
    std::vector<int> edge_lines;
    std::string output_id;
    int output_line = 0;
    bool saw_output = false;

    while (std::getline(in, line)) {
        ++line_no;
        const auto tokens = tokenize(line);
        if (tokens.empty()) continue;
        const std::string& kw = tokens[0];
        if (kw == "pipeline") {
            if (saw_pipeline) throw ParseError(line_no, "duplicate 'pipeline' line");
            if (tokens.size() != 2) throw ParseError(line_no, "usage: pipeline <name>");
            name = tokens[1];
            saw_pipeline = true;
        } else if (kw == "stage") {
            if (tokens.size() != 6) {
                throw ParseError(line_no,
                                 "usage: stage <id> <extent_outer> <extent_inner> "
                                 "<intensity> <bytes_per_point>");
            }
            Stage s;
            s.id = tokens[1];
            s.extent_outer = parse_int(tokens[2], line_no, "extent_outer");
            s.extent_inner = parse_int(tokens[3], line_no, "extent_inner");
            s.arithmetic_intensity = parse_int(tokens[4], line_no, "intensity");
            s.footprint_bytes_per_point = parse_int(tokens[5], line_no, "bytes_per_point");
            if (index_of.contains(s.id)) {
                throw ParseError(line_no, "duplicate stage id '" + s.id + "'");
            }
            index_of[s.id] = static_cast<int>(stages.size());
            stages.push_back(std::move(s));
        } else if (kw == "edge") {
            if (tokens.size() != 3) {
                throw ParseError(line_no, "usage: edge <producer_id> <consumer_id>");
            }
            edge_ids.emplace_back(tokens[1], tokens[2]);
            edge_lines.push_back(line_no);
        } else if (kw == "output") {
            if (saw_output) throw ParseError(line_no, "duplicate 'output' line");
            if (tokens.size() != 2) throw ParseError(line_no, "usage: output <id>");
            output_id = tokens[1];
            output_line = line_no;
            saw_output = true;
        } else {
            throw ParseError(line_no, "unknown directive '" + kw + "'");
        }
    }

    if (!saw_pipeline) throw ParseError(line_no, "missing 'pipeline' line");
    if (!saw_output) throw ParseError(line_no, "missing 'output' line");

    std::vector<std::pair<int, int>> edges;
    for (std::size_t i = 0; i < edge_ids.size(); ++i) {
        const auto& [prod, cons] = edge_ids[i];
        const auto pit = index_of.find(prod);
        const auto cit = index_of.find(cons);
        if (pit == index_of.end()) {
            throw ParseError(edge_lines[i], "edge references unknown stage '" + prod + "'");
        }
        if (cit == index_of.end()) {
            throw ParseError(edge_lines[i], "edge references unknown stage '" + cons + "'");
        }
        edges.emplace_back(pit->second, cit->second);
    }

    const auto oit = index_of.find(output_id);
    if (oit == index_of.end()) {
        throw ParseError(output_line, "output references unknown stage '" + output_id + "'");
    }

    return Pipeline::build(std::move(name), std::move(stages), std::move(edges), oit->second);
}

Pipeline load_pipeline_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RuntimeFailure("cannot open pipeline file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_pipeline(buf.str());
}

std::string pipeline_to_text(const Pipeline& p) {
    std::ostringstream out;
    out << "pipeline " << p.name() << "\n";
    for (const Stage& s : p.stages()) {
        out << "stage " << s.id << " " << s.extent_outer << " " << s.extent_inner << " "
            << s.arithmetic_intensity << " " << s.footprint_bytes_per_point << "\n";
    }
    for (auto [prod, cons] : p.edges()) {
        out << "edge " << p.stage(prod).id << " " << p.stage(cons).id << "\n";
    }
    out << "output " << p.stage(p.output_stage()).id << "\n";
    return out.str();
}

}  // namespace nesttune
