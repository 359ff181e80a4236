#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mockforge/core.hpp"
#include "mockforge/ingest.hpp"

// A small grammar of screen archetypes for end-to-end checks without Rico.
namespace mockforge::synth {

struct Archetype {
  std::string name;
  std::vector<std::string> phrases;  // two ways to say what the screen is
};

const std::vector<Archetype>& archetypes();
const std::vector<std::string>& topics();

/// Leaf layout of an archetype (rico_default class ids). With rng == nullptr the
/// canonical, un-jittered layout is returned; otherwise positions jitter by up
/// to +-jitter and repeated rows vary in count.
std::vector<ElementBox> archetype_layout(std::size_t archetype, const std::string& topic,
                                         std::mt19937_64* rng = nullptr, double jitter = 0.006);

/// Caption template i (0..4) for an archetype/topic pair.
std::string caption(std::size_t archetype, const std::string& topic, std::size_t template_idx);

struct SynthConfig {
  std::size_t train = 400;
  std::size_t validation = 64;
  std::size_t test = 64;
  std::uint64_t seed = 0;
  double jitter = 0.006;
};

/// Screen i of a split cycles through every archetype x topic pair. Screen ids
/// are "<archetype>.<topic>.<split>.<i>"; each (split, topic) is its own app.
ingest::Corpus synthetic_corpus(const SynthConfig& cfg = {});

/// Archetype index encoded in a synthetic screen id.
std::size_t archetype_of(const std::string& screen_id);

/// Raw inputs for `ingest`: hierarchies/<id>.json (pixel bounds, 1440x2560),
/// manifest.tsv, captions.tsv, annotations.tsv and app_descriptions.tsv.
void write_raw_inputs(const std::filesystem::path& dir, const ingest::Corpus& corpus);

}  // namespace mockforge::synth
