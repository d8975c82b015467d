#pragma once

#include "fusionmap/confidence_grid.hpp"
#include "fusionmap/config.hpp"
#include "fusionmap/error.hpp"
#include "fusionmap/geometry.hpp"
#include "fusionmap/io.hpp"
#include "fusionmap/kd_index.hpp"
#include "fusionmap/laser_mask.hpp"
#include "fusionmap/local_map.hpp"
#include "fusionmap/metrics.hpp"
#include "fusionmap/mlp.hpp"
#include "fusionmap/pipeline.hpp"
#include "fusionmap/refinement.hpp"
#include "fusionmap/synth.hpp"
