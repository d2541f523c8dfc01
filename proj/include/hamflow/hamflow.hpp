#pragma once

#include "hamflow/measure.hpp"
#include "hamflow/transport_lp.hpp"
#include "hamflow/transport.hpp"
#include "hamflow/random.hpp"
#include "hamflow/hamiltonian.hpp"
#include "hamflow/test_functions.hpp"
#include "hamflow/moreau_yosida.hpp"
#include "hamflow/flow.hpp"
#include "hamflow/study.hpp"
