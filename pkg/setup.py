# Copyright 2018 The amr-nmt Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


import io

import setuptools


with io.open('README.rst', 'r') as fh:
    long_description = fh.read()

requirements = [
    'numpy >= 1.20.0',
    'packaging',
    'penman >= 1.2.0',
    'setuptools >= 25.0.0',
]

test_requirements = [
    'flaky',
    'pytest',
]

setuptools.setup(
    name='amr-nmt',

    version='0.1.0',

    description='Desk-scale AMR-augmented neural machine translation.',
    long_description=long_description,

    author='The amr-nmt Authors',

    license='Apache Software License',

    classifiers=[
        'Operating System :: POSIX',
        'Programming Language :: Python :: 3',
    ],

    packages=setuptools.find_packages(),

    python_requires='>=3.6',

    install_requires=requirements,

    extras_require={
        'testing': test_requirements,
    },

    entry_points={
        'console_scripts': [
            'amr-nmt=amr_nmt.nmt:main',
        ],
    },
)
