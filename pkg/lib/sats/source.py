"""
sats module for mask sources, one per way a segmentation file can carry a mask
"""

import os

import sats
import sats.ingest

class Source:
    """
    Base Abstraction for Source

    The name is the key a segment uses in a segmentation document, like
    {"name": "eyes", "rle": "0:3,1:2"}
    """

    name = None

    def __new__(cls, *args, **kwargs):
        """
        Register this source
        """

        self = object.__new__(cls)

        self.name = kwargs["name"] if "name" in kwargs else args[0]

        for key in kwargs:
            setattr(self, key, kwargs[key])

        sats.register(self)

        return self

    def decode(self, value, grid, base=None):
        """
        Turns a segment's value into a boolean mask over grid
        """

    def encode(self, mask, base=None, label=None):
        """
        Turns a boolean mask into a segment's value
        """

class RleSource(Source):
    """
    Masks inline as "value:count" runs
    """

    def decode(self, value, grid, base=None):

        return sats.ingest.decode_rle(value, grid, path=base)

    def encode(self, mask, base=None, label=None):

        return sats.ingest.encode_rle(mask)

class PngSource(Source):
    """
    Masks as 8-bit grayscale PNG files, relative to the segmentation document
    """

    def decode(self, value, grid, base=None):

        path = value if base is None else os.path.join(base, value)

        return sats.ingest.read_png_mask(path, grid)

    def encode(self, mask, base=None, label=None):

        filename = f"{label}.png"

        sats.ingest.write_png_mask(filename if base is None else os.path.join(base, filename), mask)

        return filename
