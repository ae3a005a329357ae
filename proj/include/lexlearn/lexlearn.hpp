#pragma once

#include "lexlearn/bundle.hpp"
#include "lexlearn/design.hpp"
#include "lexlearn/errors.hpp"
#include "lexlearn/inference.hpp"
#include "lexlearn/rng.hpp"
#include "lexlearn/session.hpp"
#include "lexlearn/simulator.hpp"
#include "lexlearn/taxonomy.hpp"
