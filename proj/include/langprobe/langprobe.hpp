#ifndef LANGPROBE_LANGPROBE_HPP
#define LANGPROBE_LANGPROBE_HPP

/**
 * @file langprobe.hpp
 *
 * @brief Umbrella header.
 */

#include "core/types.hpp"

#include "data/example.hpp"
#include "data/formats.hpp"
#include "data/split.hpp"
#include "data/synthetic.hpp"
#include "data/vocabulary.hpp"

#include "encoder/checkpoint.hpp"
#include "encoder/encoder.hpp"
#include "encoder/mlm.hpp"
#include "encoder/params.hpp"

#include "heads/head.hpp"
#include "heads/losses.hpp"

#include "training/adam.hpp"
#include "training/config.hpp"
#include "training/features.hpp"
#include "training/probe.hpp"
#include "training/regimes.hpp"
#include "training/search.hpp"

#include "analysis/kmeans.hpp"
#include "analysis/metrics.hpp"
#include "analysis/sample.hpp"
#include "analysis/tsne.hpp"

#include "pipeline/config.hpp"
#include "pipeline/pipeline.hpp"

#endif
