#pragma once

#include "flowprobe/detection.hpp"
#include "flowprobe/isolation_forest.hpp"
#include "flowprobe/kmeans.hpp"
#include "flowprobe/ocsvm.hpp"
