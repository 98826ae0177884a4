#pragma once

#include "dcrm/concentration.hpp"
#include "dcrm/config.hpp"
#include "dcrm/core.hpp"
#include "dcrm/flows.hpp"
#include "dcrm/observables.hpp"
#include "dcrm/report_io.hpp"
#include "dcrm/runner.hpp"
#include "dcrm/stats.hpp"
#include "dcrm/wep.hpp"
