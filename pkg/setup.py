from setuptools import Extension, setup

setup(
    ext_modules=[
        Extension(
            "maskspell._fastalign",
            sources=["src/maskspell/_fastalign.c"],
            optional=True,  # pure-Python fallback exists
        )
    ]
)
