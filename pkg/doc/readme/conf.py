# -*- coding: utf-8 -*-
#
# Builds the README.rst at the repository root with the rst builder of sphinxcontrib-restbuilder

import sys
import pathlib

here = pathlib.Path(__file__).parent
root = (here / '../..').resolve()
sys.path.append(str(root))

_version = {}
exec((root / 'shiftlab' / 'version.py').read_text(), _version)

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.doctest',
    'sphinx.ext.coverage',
    'sphinx.ext.viewcode',
    'sphinxcontrib.restbuilder',
    'sphinx.ext.autosectionlabel'
]

html_use_smartypants = False

autoclass_content = 'both'

templates_path = ['_templates']
source_suffix = '.rst'

# The master toctree document.
master_doc = 'README'

project = u'shiftlab'
copyright = u'2026, the shiftlab developers'
author = u'the shiftlab developers'

version = _version['__version__']
release = _version['__version__']

exclude_patterns = ['_build']
pygments_style = 'sphinx'
