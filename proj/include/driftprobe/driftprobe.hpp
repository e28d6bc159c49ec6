#pragma once

// Everything except the live HTTP transport (driftprobe/http_transport.hpp).

#include "driftprobe/config.hpp"
#include "driftprobe/data.hpp"
#include "driftprobe/error.hpp"
#include "driftprobe/fingerprint.hpp"
#include "driftprobe/harness.hpp"
#include "driftprobe/lexicon.hpp"
#include "driftprobe/probekit.hpp"
#include "driftprobe/provider.hpp"
#include "driftprobe/report.hpp"
#include "driftprobe/scorers.hpp"
#include "driftprobe/stats.hpp"
#include "driftprobe/transcript.hpp"
