#pragma once

#include "fluctlab/convolution.hpp"
#include "fluctlab/error.hpp"
#include "fluctlab/fluctuation.hpp"
#include "fluctlab/io.hpp"
#include "fluctlab/lattice.hpp"
#include "fluctlab/meanfield.hpp"
#include "fluctlab/model.hpp"
#include "fluctlab/numeric.hpp"
#include "fluctlab/parallel.hpp"
#include "fluctlab/rng.hpp"
#include "fluctlab/scaling.hpp"
#include "fluctlab/simulator.hpp"
#include "fluctlab/test_functions.hpp"
