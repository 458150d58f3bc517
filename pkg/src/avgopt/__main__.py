# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

from ._cli import main


main()
