#!/usr/bin/env python
import subprocess
from pathlib import Path

from setuptools import Command, setup, find_packages

here = Path(__file__).parent
readme = here / 'README.rst'
long_description = readme.read_text() if readme.exists() else ''

about = {}
exec((here / 'shiftlab' / 'version.py').read_text(), about)


class _SphinxCommand(Command):
    """
    Runs sphinx-build with one builder over one of the doc/ source trees
    """
    builder = None
    source = None
    user_options = [('dir=', 'd', 'The output directory')]

    def initialize_options(self):
        self.dir = None

    def finalize_options(self):
        self.dir = Path(self.dir) if self.dir else self.default_dir()
        if not self.dir.is_dir():
            raise FileNotFoundError('The output directory "{}" does not exist'.format(self.dir))

    def default_dir(self) -> Path:
        return here

    def run(self):
        command = ['sphinx-build', '-b', self.builder, self.source, str(self.dir)]
        self.announce('Running command: {}'.format(command), level=2)
        subprocess.check_call(command, cwd=str(here))


class BuildReadme(_SphinxCommand):
    description = 'Regenerate README.rst from doc/readme'
    builder = 'rst'
    source = 'doc/readme'


class BuildSite(_SphinxCommand):
    description = 'Build the HTML documentation site from doc/site'
    builder = 'html'
    source = 'doc/site'

    def default_dir(self) -> Path:
        return Path('.')


setup(
    name='shiftlab',
    version=about['__version__'],
    description='Unsupervised adversarial domain adaptation with pluggable normalization, and active learning on the '
                'target domain',
    long_description=long_description,
    long_description_content_type='text/x-rst',
    license='MIT',
    test_suite='test',
    classifiers=[
        'Development Status :: 4 - Beta',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3 :: Only',
        'Programming Language :: Python :: 3.8',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ],
    keywords='domain adaptation adversarial active learning normalization',
    packages=find_packages(include=['shiftlab']),
    python_requires='>=3.8',
    install_requires=[
        'numpy>=1.17',
        'pandas>=1.5',
        'packaging',
        'scipy>=1.4',
        'Pillow>=8.0',
    ],
    entry_points={
        'console_scripts': ['shiftlab = shiftlab.cli:main']
    },
    cmdclass={
        'build_readme': BuildReadme,
        'build_site': BuildSite
    }
)
