#pragma once
#include <rgw/bpalm.hpp>
#include <rgw/error.hpp>
#include <rgw/graph_bench.hpp>
#include <rgw/gw_kernel.hpp>
#include <rgw/io.hpp>
#include <rgw/marginal_solver.hpp>
#include <rgw/measures.hpp>
#include <rgw/oracles.hpp>
#include <rgw/pi_solver.hpp>
#include <rgw/robustness.hpp>
#include <rgw/selfcheck.hpp>
