from shiftlab import parse_config
from shiftlab.errors import ShiftLabConfigError

config = '''
train.mode = UADA
train.norm = TransNorm
train.lr = fast
train.hidden = 64, -8
al.strategies = Random, EMOC, Random
'''

try:
    parse_config(config)
except ShiftLabConfigError as error:
    for warning in error.warnings:
        print(warning)
