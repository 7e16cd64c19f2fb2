#pragma once

#include "gnssbench/align.hpp"
#include "gnssbench/continuity.hpp"
#include "gnssbench/epochs.hpp"
#include "gnssbench/error.hpp"
#include "gnssbench/geodesy.hpp"
#include "gnssbench/nmea.hpp"
#include "gnssbench/perfmap.hpp"
#include "gnssbench/ref_csv.hpp"
#include "gnssbench/stats.hpp"
#include "gnssbench/sync.hpp"
