#pragma once

#include "ctmc/core.hpp"
#include "ctmc/decomposition.hpp"
#include "ctmc/dynamics.hpp"
#include "ctmc/errors.hpp"
#include "ctmc/estimation.hpp"
#include "ctmc/forecasting.hpp"
#include "ctmc/inference.hpp"
#include "ctmc/io.hpp"
#include "ctmc/kernels.hpp"
#include "ctmc/matrix.hpp"
#include "ctmc/pipeline.hpp"
#include "ctmc/rng.hpp"
#include "ctmc/simulator.hpp"
