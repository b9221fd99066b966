#pragma once

#include "sedid/archive.hpp"
#include "sedid/classifier.hpp"
#include "sedid/config.hpp"
#include "sedid/core.hpp"
#include "sedid/dataset.hpp"
#include "sedid/detector.hpp"
#include "sedid/errors.hpp"
#include "sedid/experiment.hpp"
#include "sedid/fsio.hpp"
#include "sedid/metrics.hpp"
#include "sedid/mlp.hpp"
#include "sedid/nn.hpp"
#include "sedid/predictor.hpp"
#include "sedid/profile_io.hpp"
#include "sedid/rng.hpp"
#include "sedid/sampler.hpp"
#include "sedid/schedule.hpp"
#include "sedid/tensor.hpp"
