#ifndef SELBIAS_SELBIAS_HPP_
#define SELBIAS_SELBIAS_HPP_

#include "selbias/analytics.hpp"
#include "selbias/classifier.hpp"
#include "selbias/common.hpp"
#include "selbias/context.hpp"
#include "selbias/corpus.hpp"
#include "selbias/encoder.hpp"
#include "selbias/entity_linking.hpp"
#include "selbias/gaussian.hpp"
#include "selbias/metrics.hpp"
#include "selbias/pca.hpp"
#include "selbias/pipeline.hpp"
#include "selbias/probe.hpp"
#include "selbias/sentences.hpp"
#include "selbias/text.hpp"
#include "selbias/time.hpp"

#endif  // SELBIAS_SELBIAS_HPP_
