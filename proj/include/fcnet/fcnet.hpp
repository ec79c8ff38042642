#pragma once

#include "fcnet/classify.hpp"
#include "fcnet/connectivity.hpp"
#include "fcnet/dse.hpp"
#include "fcnet/error.hpp"
#include "fcnet/io.hpp"
#include "fcnet/model.hpp"
#include "fcnet/netstats.hpp"
#include "fcnet/pipeline.hpp"
#include "fcnet/synth.hpp"
