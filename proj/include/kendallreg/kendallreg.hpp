#pragma once

#include "kendallreg/bench.hpp"
#include "kendallreg/ckt.hpp"
#include "kendallreg/dictionary.hpp"
#include "kendallreg/error.hpp"
#include "kendallreg/inference.hpp"
#include "kendallreg/io.hpp"
#include "kendallreg/kernel.hpp"
#include "kendallreg/lasso.hpp"
#include "kendallreg/parallel.hpp"
#include "kendallreg/pipeline.hpp"
#include "kendallreg/rng.hpp"
#include "kendallreg/simulation.hpp"
#include "kendallreg/stats.hpp"
#include "kendallreg/transform.hpp"
