#pragma once

// Umbrella header for the lunar surface restoration toolkit.

#include "lunar/adam.hpp"
#include "lunar/checkpoint.hpp"
#include "lunar/common.hpp"
#include "lunar/dataset.hpp"
#include "lunar/evaluator.hpp"
#include "lunar/geo.hpp"
#include "lunar/image.hpp"
#include "lunar/image_io.hpp"
#include "lunar/metrics.hpp"
#include "lunar/mosaic.hpp"
#include "lunar/restorer.hpp"
#include "lunar/rng.hpp"
#include "lunar/run_record.hpp"
#include "lunar/stripes.hpp"
#include "lunar/tensor.hpp"
#include "lunar/trainer.hpp"
#include "lunar/triptych.hpp"
#include "lunar/unet.hpp"
