#pragma once

#include "saplab/attacks.hpp"
#include "saplab/errors.hpp"
#include "saplab/experiment.hpp"
#include "saplab/gradcore.hpp"
#include "saplab/network.hpp"
#include "saplab/report.hpp"
#include "saplab/rng.hpp"
#include "saplab/samples.hpp"
#include "saplab/sap.hpp"
#include "saplab/synthetic.hpp"
#include "saplab/tensor.hpp"
