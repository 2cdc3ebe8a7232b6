#pragma once

#include "earlystop/errors.hpp"
#include "earlystop/kernel.hpp"
#include "earlystop/filters.hpp"
#include "earlystop/estimators.hpp"
#include "earlystop/complexity.hpp"
#include "earlystop/random.hpp"
#include "earlystop/stopping_rules.hpp"
#include "earlystop/simulation.hpp"
#include "earlystop/io.hpp"
