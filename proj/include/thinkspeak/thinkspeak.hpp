#pragma once

#include "thinkspeak/core_types.hpp"
#include "thinkspeak/data_pipeline.hpp"
#include "thinkspeak/decode_scheduler.hpp"
#include "thinkspeak/interleave_codec.hpp"
#include "thinkspeak/latency_sim.hpp"
#include "thinkspeak/report.hpp"
#include "thinkspeak/run_config.hpp"
#include "thinkspeak/tokenizer.hpp"
