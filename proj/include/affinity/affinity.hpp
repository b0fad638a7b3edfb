#pragma once

#include "affinity/error.hpp"
#include "affinity/hash.hpp"
#include "affinity/regex.hpp"
#include "affinity/core.hpp"
#include "affinity/netsim.hpp"
#include "affinity/store.hpp"
#include "affinity/compute.hpp"
#include "affinity/simulator.hpp"
#include "affinity/workload.hpp"
#include "affinity/harness.hpp"
