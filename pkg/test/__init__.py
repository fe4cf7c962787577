from test.test_tensor import *
from test.test_optim import *
from test.test_normalization import *
from test.test_data import *
from test.test_pool import *
from test.test_model import *
from test.test_active_learning import *
from test.test_images import *
from test.test_stats import *
from test.test_results import *
from test.test_validation import *
from test.test_config_warning import *
from test.test_config import *
from test.test_cli import *
from test.test_example import *
from test.test_metadata import *
from test.test_acceptance import *
