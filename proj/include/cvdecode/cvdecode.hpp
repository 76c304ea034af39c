#pragma once

#include "cvdecode/array.hpp"
#include "cvdecode/bands.hpp"
#include "cvdecode/cluster.hpp"
#include "cvdecode/dataset.hpp"
#include "cvdecode/error.hpp"
#include "cvdecode/io.hpp"
#include "cvdecode/labels.hpp"
#include "cvdecode/metrics.hpp"
#include "cvdecode/mlp.hpp"
#include "cvdecode/rng.hpp"
#include "cvdecode/search.hpp"
#include "cvdecode/signal.hpp"
#include "cvdecode/stats.hpp"
#include "cvdecode/synth.hpp"
#include "cvdecode/version.hpp"
#include "cvdecode/xfreq.hpp"
