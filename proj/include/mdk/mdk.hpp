#pragma once

#include "mdk/camera.hpp"
#include "mdk/error.hpp"
#include "mdk/eval.hpp"
#include "mdk/geometry.hpp"
#include "mdk/grid.hpp"
#include "mdk/kdtree.hpp"
#include "mdk/losses.hpp"
#include "mdk/random.hpp"
#include "mdk/refine.hpp"
#include "mdk/resize.hpp"
#include "mdk/synthetic.hpp"
