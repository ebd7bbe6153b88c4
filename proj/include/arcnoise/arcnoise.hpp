#pragma once

#include "arcnoise/golden.hpp"
#include "arcnoise/grid.hpp"
#include "arcnoise/http_client.hpp"
#include "arcnoise/llm_client.hpp"
#include "arcnoise/noise.hpp"
#include "arcnoise/prompt.hpp"
#include "arcnoise/report.hpp"
#include "arcnoise/rng.hpp"
#include "arcnoise/runner.hpp"
#include "arcnoise/scorer.hpp"
