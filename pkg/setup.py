from setuptools import setup, find_packages

setup(
    name='urban_sim',
    version='0.1.0',
    packages=find_packages(exclude=['tests', 'tests.*']),
    include_package_data=True,
    install_requires=[
        'click',
        'pydantic>=2',
        'python-dotenv',
        'numpy',
        'networkx',
    ],
    entry_points='''
        [console_scripts]
        urban-sim=urban_sim.cli:cli
    ''',
    description="Deterministic discrete-event simulator for QoS-aware multipath routing in mobile ad hoc networks.",
    long_description=open('README.md').read(),
    long_description_content_type='text/markdown',
    python_requires='>=3.9',
)
