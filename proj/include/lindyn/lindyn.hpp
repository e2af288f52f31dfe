#pragma once

#include "lindyn/error.hpp"
#include "lindyn/linalg.hpp"
#include "lindyn/mdp.hpp"
#include "lindyn/spectral.hpp"
#include "lindyn/generators.hpp"
#include "lindyn/dynamics.hpp"
#include "lindyn/verifier.hpp"
#include "lindyn/io.hpp"
