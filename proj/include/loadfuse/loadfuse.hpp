#pragma once

// Umbrella header.

#include "loadfuse/config.hpp"
#include "loadfuse/correlation.hpp"
#include "loadfuse/csv.hpp"
#include "loadfuse/dgp.hpp"
#include "loadfuse/errors.hpp"
#include "loadfuse/estimators.hpp"
#include "loadfuse/exact_gp.hpp"
#include "loadfuse/experiment.hpp"
#include "loadfuse/features.hpp"
#include "loadfuse/gp_fit.hpp"
#include "loadfuse/kernel.hpp"
#include "loadfuse/metrics.hpp"
#include "loadfuse/model_store.hpp"
#include "loadfuse/optimizer.hpp"
#include "loadfuse/pipeline.hpp"
#include "loadfuse/plot.hpp"
#include "loadfuse/rng.hpp"
#include "loadfuse/series.hpp"
#include "loadfuse/svgp.hpp"
#include "loadfuse/synthetic.hpp"
#include "loadfuse/tape.hpp"
#include "loadfuse/timeutil.hpp"
#include "loadfuse/train.hpp"
