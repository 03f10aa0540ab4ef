#pragma once

#include "matrix_core.hpp"
#include "design.hpp"
#include "groups.hpp"
#include "solver.hpp"
#include "first_pass.hpp"
#include "second_pass.hpp"
#include "predict.hpp"
#include "montecarlo.hpp"
#include "panel.hpp"
#include "config.hpp"
#include "pipeline.hpp"
