#pragma once

#include "algnet/adam.hpp"
#include "algnet/autodiff.hpp"
#include "algnet/checkpoint.hpp"
#include "algnet/config.hpp"
#include "algnet/ehr_data.hpp"
#include "algnet/grad_check.hpp"
#include "algnet/lgc_memory.hpp"
#include "algnet/losses.hpp"
#include "algnet/memory_readout.hpp"
#include "algnet/metrics.hpp"
#include "algnet/model.hpp"
#include "algnet/params.hpp"
#include "algnet/patient_encoder.hpp"
#include "algnet/recurrent.hpp"
#include "algnet/rng.hpp"
#include "algnet/synth.hpp"
#include "algnet/tensor.hpp"
#include "algnet/toy_gradcheck.hpp"
#include "algnet/train.hpp"
