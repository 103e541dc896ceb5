#pragma once

#include "piculet/error.hpp"
#include "piculet/digest.hpp"
#include "piculet/image.hpp"
#include "piculet/extractors/types.hpp"
#include "piculet/extractors/coco.hpp"
#include "piculet/extractors/gallery.hpp"
#include "piculet/extractors/transport.hpp"
#include "piculet/extractors/fixture.hpp"
#include "piculet/extractors/client.hpp"
#include "piculet/formulation/templates.hpp"
#include "piculet/formulation/formulate.hpp"
#include "piculet/gateway/mllm.hpp"
#include "piculet/gateway/cache.hpp"
#include "piculet/gateway/config.hpp"
#include "piculet/gateway/pipeline.hpp"
#include "piculet/gateway/server.hpp"
#include "piculet/harness/metrics.hpp"
#include "piculet/harness/datasets.hpp"
#include "piculet/harness/judge.hpp"
#include "piculet/harness/runner.hpp"
#include "piculet/harness/report.hpp"
#include "piculet/harness/ablation.hpp"
