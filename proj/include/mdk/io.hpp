#pragma once

#include "mdk/io/file.hpp"
#include "mdk/io/formats.hpp"
#include "mdk/io/image.hpp"
#include "mdk/io/pfm.hpp"
#include "mdk/io/ply.hpp"
#include "mdk/io/png.hpp"
