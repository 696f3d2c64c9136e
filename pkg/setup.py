from setuptools import find_packages, setup

setup(
    name='survival-ee',
    version='0.1.0',
    description='Pooled logistic regression and g-computation by stacked estimating equations',
    package_dir={'': 'src'},
    packages=find_packages(where='src'),
    python_requires='>=3.9',
    install_requires=[
        'pandas>=2.0.0',
        'numpy>=1.24.0',
        'scipy>=1.10.0',
        'pathos>=0.3.0',
    ],
    extras_require={'test': ['pytest>=7.0.0']},
    entry_points={'console_scripts': ['survival-ee=survival_ee.main:main']},
)
