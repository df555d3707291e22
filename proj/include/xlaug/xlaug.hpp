#pragma once

// Umbrella header: the whole library in one include.

#include "xlaug/errors.hpp"
#include "xlaug/rng.hpp"
#include "xlaug/unicode.hpp"
#include "xlaug/lang.hpp"
#include "xlaug/corpus.hpp"
#include "xlaug/wikiscrap.hpp"
#include "xlaug/metrics.hpp"
#include "xlaug/prompts.hpp"
#include "xlaug/vocab.hpp"
#include "xlaug/seq2seq.hpp"
#include "xlaug/augment.hpp"
#include "xlaug/toybench.hpp"
#include "xlaug/pipeline.hpp"
#include "xlaug/cli.hpp"
