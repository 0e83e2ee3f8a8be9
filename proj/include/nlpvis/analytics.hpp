#pragma once

#include "nlpvis/analytics/grid.hpp"
#include "nlpvis/analytics/isobands.hpp"
#include "nlpvis/analytics/pca.hpp"
#include "nlpvis/analytics/plane.hpp"
#include "nlpvis/analytics/projection.hpp"
#include "nlpvis/analytics/series.hpp"
