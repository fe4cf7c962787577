# -*- coding: utf-8 -*-
#
# shiftlab documentation build configuration file
#
# This file is execfile()d with the current directory set to its containing dir.

import sys
import pathlib

here = pathlib.Path(__file__).parent
root = (here / '../..').resolve()
sys.path.append(str(root))

# Parse out the version from version.py
_version = {}
exec((root / 'shiftlab' / 'version.py').read_text(), _version)

# -- General configuration ------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.doctest',
    'sphinx.ext.coverage',
    'sphinx.ext.viewcode',
    'sphinx.ext.autosectionlabel',
]

html_use_smartypants = False

autoclass_content = 'both'
autodoc_member_order = 'bysource'

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'shiftlab'
copyright = u'2026, the shiftlab developers'
author = u'the shiftlab developers'

# The short X.Y version.
version = _version['__version__']
# The full version, including alpha/beta/rc tags.
release = _version['__version__']

exclude_patterns = ['_build']
pygments_style = 'sphinx'
todo_include_todos = False

# -- Options for HTML output ----------------------------------------------

html_theme = 'alabaster'
html_static_path = ['_static']
htmlhelp_basename = 'shiftlabdoc'

# -- Options for LaTeX, manual page and Texinfo output ---------------------

latex_documents = [
    (master_doc, 'shiftlab.tex', u'shiftlab Documentation', author, 'manual'),
]

man_pages = [
    (master_doc, 'shiftlab', u'shiftlab Documentation', [author], 1)
]

texinfo_documents = [
    (master_doc, 'shiftlab', u'shiftlab Documentation', author, 'shiftlab',
     'Domain adaptation and active learning experiments.', 'Miscellaneous'),
]
