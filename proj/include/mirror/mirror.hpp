#pragma once

#include "mirror/error.hpp"
#include "mirror/llm_client.hpp"
#include "mirror/metrics.hpp"
#include "mirror/persona.hpp"
#include "mirror/pipeline.hpp"
#include "mirror/plssem.hpp"
#include "mirror/prompting.hpp"
#include "mirror/studies.hpp"
#include "mirror/survey.hpp"
#include "mirror/synthetic.hpp"
