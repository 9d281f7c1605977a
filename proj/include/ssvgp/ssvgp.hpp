#pragma once

#include "ssvgp/adam.hpp"
#include "ssvgp/data.hpp"
#include "ssvgp/ensemble.hpp"
#include "ssvgp/errors.hpp"
#include "ssvgp/gp.hpp"
#include "ssvgp/kernel.hpp"
#include "ssvgp/metrics.hpp"
#include "ssvgp/neighbors.hpp"
#include "ssvgp/parallel.hpp"
#include "ssvgp/special.hpp"
#include "ssvgp/variational.hpp"
