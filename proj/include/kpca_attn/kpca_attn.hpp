#pragma once

#include "kpca_attn/attention.hpp"
#include "kpca_attn/bench.hpp"
#include "kpca_attn/csv.hpp"
#include "kpca_attn/decomp.hpp"
#include "kpca_attn/kernel.hpp"
#include "kpca_attn/kpca.hpp"
#include "kpca_attn/mat.hpp"
#include "kpca_attn/rng.hpp"
#include "kpca_attn/rpc.hpp"
#include "kpca_attn/verify.hpp"
#include "kpca_attn/version.hpp"
