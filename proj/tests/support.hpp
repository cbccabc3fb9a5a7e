#pragma once

#include "oracles.hpp"

#include <gtest/gtest.h>

#define EXPECT_ERRC(stmt, errc)                                                        \
    do {                                                                               \
        try {                                                                          \
            stmt;                                                                      \
            ADD_FAILURE() << "expected " << ::ccar::errc_name(errc) << ", got success"; \
        } catch (const ::ccar::Error& e_) {                                            \
            EXPECT_EQ(e_.code(), errc) << e_.what();                                   \
        }                                                                              \
    } while (0)
