#pragma once

#include "dckit/errors.hpp"
#include "dckit/funcs.hpp"
#include "dckit/sets.hpp"
#include "dckit/subsolver.hpp"
#include "dckit/dca.hpp"
#include "dckit/certify.hpp"
#include "dckit/dcc.hpp"
#include "dckit/consensus.hpp"
#include "dckit/decomp.hpp"
#include "dckit/models.hpp"
#include "dckit/io.hpp"
