#pragma once

#include "malpaca/capture.hpp"
#include "malpaca/distance.hpp"
#include "malpaca/error.hpp"
#include "malpaca/features.hpp"
#include "malpaca/hdbscan.hpp"
#include "malpaca/metrics.hpp"
#include "malpaca/pipeline.hpp"
#include "malpaca/profiles.hpp"
#include "malpaca/report.hpp"
#include "malpaca/synth.hpp"
