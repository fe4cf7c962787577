import unittest
from packaging import version
import shiftlab


class Version(unittest.TestCase):
    def test_version(self):
        """
        Check that we have a __version__ defined, and that it's at least 0.4.0
        """
        self.assertIsNotNone(shiftlab.__version__)
        parsed = version.parse(shiftlab.__version__)
        self.assertGreaterEqual(parsed, version.Version('0.4.0'))
