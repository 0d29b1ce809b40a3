#pragma once

#include "tmeasures/analysis.hpp"
#include "tmeasures/binary_io.hpp"
#include "tmeasures/core.hpp"
#include "tmeasures/data.hpp"
#include "tmeasures/engine.hpp"
#include "tmeasures/error.hpp"
#include "tmeasures/heatmap.hpp"
#include "tmeasures/image.hpp"
#include "tmeasures/measures.hpp"
#include "tmeasures/network.hpp"
#include "tmeasures/providers.hpp"
#include "tmeasures/report.hpp"
#include "tmeasures/selfcheck.hpp"
#include "tmeasures/stdump.hpp"
#include "tmeasures/transforms.hpp"
