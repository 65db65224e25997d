#pragma once

#include <cstdint>

#include "scqa/corpus.hpp"
#include "scqa/distill.hpp"

namespace scqa::fixture {

/// Synthetic corpus with ASR views at `wer`, already filtered.
inline Corpus noisy_corpus(std::size_t conversations, std::size_t turns, std::size_t doc_length,
                           double wer, std::uint64_t seed) {
  SynthConfig sc;
  sc.conversations = conversations;
  sc.turns = turns;
  sc.doc_length = doc_length;
  sc.vocab_size = 40;
  sc.seed = seed;
  NoiseConfig nc;
  nc.target_wer = wer;
  nc.confusion = synth_vocabulary(sc.vocab_size);
  nc.seed = seed;
  return filter(apply_asr_channel(synth(sc), nc)).corpus;
}

/// A model small enough for a training run to take well under a second.
inline TrainConfig tiny_train_config(FusionMechanism fusion, std::size_t steps, std::uint64_t seed) {
  TrainConfig tc;
  tc.model.d = 8;
  tc.model.heads = 2;
  tc.model.d_ff = 16;
  tc.model.fusion = fusion;
  tc.input.max_len = 24;
  tc.kd.steps = steps;
  tc.kd.batch = 4;
  tc.kd.seed = seed;
  return tc;
}

}  // namespace scqa::fixture
