#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nesttune/errors.hpp"

namespace nesttune {

// One function/loop nest in the pipeline DAG. Extents are iteration counts
// of the two loops; arithmetic_intensity is ops per point; footprint is the
// stored bytes per point.
struct Stage {
    std::string id;
    int extent_outer = 0;
    int extent_inner = 0;
    int arithmetic_intensity = 1;
    int footprint_bytes_per_point = 4;

    bool operator==(const Stage&) const = default;
};

// A DAG of stages with a single output. Immutable after construction; safe
// to share read-only across concurrent searchers.
//
// Scheduling walks stages from the output stage backward toward the inputs,
// so every consumer is decided before any of its producers. schedule_order()
// is that walk: the reverse of a stable topological order of the DAG.
class Pipeline {
  public:
    static Pipeline build(std::string name, std::vector<Stage> stages,
                          std::vector<std::pair<int, int>> edges, int output_stage);

    const std::string& name() const { return name_; }
    const std::vector<Stage>& stages() const { return stages_; }
    const Stage& stage(int i) const { return stages_[static_cast<std::size_t>(i)]; }
    int stage_count() const { return static_cast<int>(stages_.size()); }
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }
    int output_stage() const { return output_stage_; }

    const std::vector<int>& consumers(int stage) const {
        return consumers_[static_cast<std::size_t>(stage)];
    }
    const std::vector<int>& producers(int stage) const {
        return producers_[static_cast<std::size_t>(stage)];
    }

    // Stage index scheduled at step k; schedule_order()[0] == output_stage().
    const std::vector<int>& schedule_order() const { return schedule_order_; }
    // Inverse of schedule_order(): the step at which a stage is scheduled.
    int schedule_pos(int stage) const { return schedule_pos_[static_cast<std::size_t>(stage)]; }

    // Index of a stage by id; -1 when absent.
    int find_stage(const std::string& id) const;

    bool operator==(const Pipeline& other) const {
        return name_ == other.name_ && stages_ == other.stages_ && edges_ == other.edges_ &&
               output_stage_ == other.output_stage_;
    }

  private:
    Pipeline() = default;

    std::string name_;
    std::vector<Stage> stages_;
    std::vector<std::pair<int, int>> edges_;  // (producer, consumer) indices
    int output_stage_ = -1;

    std::vector<std::vector<int>> consumers_;
    std::vector<std::vector<int>> producers_;
    std::vector<int> schedule_order_;
    std::vector<int> schedule_pos_;
};

// Parses the line-oriented pipeline format:
//   pipeline <name>
//   stage <id> <extent_outer> <extent_inner> <intensity> <bytes_per_point>
//   edge <producer_id> <consumer_id>
//   output <id>
// '#' starts a comment; blank lines are ignored.
Pipeline load_pipeline(const std::string& text);
Pipeline load_pipeline_file(const std::string& path);

// Prints a pipeline back into the same format (round-trips through
// load_pipeline to an equal pipeline).
std::string pipeline_to_text(const Pipeline& p);

}  // namespace nesttune
