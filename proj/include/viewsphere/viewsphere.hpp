#pragma once

#include "viewsphere/errors.hpp"
#include "viewsphere/random.hpp"
#include "viewsphere/polysphere.hpp"
#include "viewsphere/camera.hpp"
#include "viewsphere/scorer.hpp"
#include "viewsphere/table.hpp"
#include "viewsphere/goldeval.hpp"
#include "viewsphere/losses.hpp"
#include "viewsphere/surrogate.hpp"
#include "viewsphere/search.hpp"
#include "viewsphere/benchmark.hpp"
#include "viewsphere/provider.hpp"
#include "viewsphere/viz.hpp"
// last: httplib pulls in <resolv.h>
#include "viewsphere/remote_scorer.hpp"
