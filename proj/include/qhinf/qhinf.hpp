#pragma once

#include "qhinf/analysis.hpp"
#include "qhinf/demo.hpp"
#include "qhinf/io.hpp"
#include "qhinf/jumpsim.hpp"
#include "qhinf/linalg.hpp"
#include "qhinf/lmi.hpp"
#include "qhinf/optics.hpp"
#include "qhinf/qmodel.hpp"
#include "qhinf/realizability.hpp"
#include "qhinf/synthesis.hpp"
