#pragma once

#include "config.hpp"
#include "enkf.hpp"
#include "errors.hpp"
#include "experiment.hpp"
#include "geodesic.hpp"
#include "io.hpp"
#include "kernel.hpp"
#include "parallel.hpp"
#include "point_set.hpp"
#include "random.hpp"
#include "record.hpp"
#include "svg.hpp"
#include "synth.hpp"
