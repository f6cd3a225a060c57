#pragma once

#include "ldcd/conformal.hpp"
#include "ldcd/corpus.hpp"
#include "ldcd/detector.hpp"
#include "ldcd/embedding.hpp"
#include "ldcd/metric_ncm.hpp"
#include "ldcd/nab_score.hpp"
#include "ldcd/rng.hpp"
#include "ldcd/series.hpp"
