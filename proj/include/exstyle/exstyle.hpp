#pragma once

/// Umbrella header for the pairwise exchangeable style transfer toolkit.

#include "exstyle/checkpoint.hpp"
#include "exstyle/common.hpp"
#include "exstyle/config.hpp"
#include "exstyle/dataset.hpp"
#include "exstyle/decoder.hpp"
#include "exstyle/encoder.hpp"
#include "exstyle/exchange.hpp"
#include "exstyle/fusion.hpp"
#include "exstyle/image.hpp"
#include "exstyle/image_io.hpp"
#include "exstyle/layers.hpp"
#include "exstyle/losses.hpp"
#include "exstyle/model.hpp"
#include "exstyle/optimizer.hpp"
#include "exstyle/rng.hpp"
#include "exstyle/stylecodec.hpp"
#include "exstyle/training.hpp"
