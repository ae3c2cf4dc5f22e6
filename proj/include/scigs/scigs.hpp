#pragma once

#include "scigs/config.hpp"
#include "scigs/core.hpp"
#include "scigs/field.hpp"
#include "scigs/filter.hpp"
#include "scigs/image.hpp"
#include "scigs/io.hpp"
#include "scigs/metrics.hpp"
#include "scigs/optim.hpp"
#include "scigs/pipeline.hpp"
#include "scigs/raster.hpp"
#include "scigs/sci.hpp"
#include "scigs/synth.hpp"
