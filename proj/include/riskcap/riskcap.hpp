#pragma once

#include "riskcap/error.hpp"
#include "riskcap/rng.hpp"
#include "riskcap/distributions.hpp"
#include "riskcap/bayes.hpp"
#include "riskcap/laplace.hpp"
#include "riskcap/estimators.hpp"
#include "riskcap/mc_engine.hpp"
#include "riskcap/capital.hpp"
#include "riskcap/experiments.hpp"
#include "riskcap/io.hpp"
