#pragma once

#include "paralab/harness/runner.hpp"
