#pragma once

#include "nbdf/adam.hpp"
#include "nbdf/audio.hpp"
#include "nbdf/checkpoint.hpp"
#include "nbdf/enhancer.hpp"
#include "nbdf/evalkit.hpp"
#include "nbdf/features.hpp"
#include "nbdf/fft.hpp"
#include "nbdf/gradcheck.hpp"
#include "nbdf/mixer.hpp"
#include "nbdf/model.hpp"
#include "nbdf/objective.hpp"
#include "nbdf/stft.hpp"
#include "nbdf/targets.hpp"
#include "nbdf/trainer.hpp"
