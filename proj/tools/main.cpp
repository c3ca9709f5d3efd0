// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0

#include "conde/cli.hpp"

int main(int argc, char** argv) { return conde::run_cli(argc, argv); }
