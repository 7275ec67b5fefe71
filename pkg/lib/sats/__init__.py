"""
Main sats module, Segment Attribution Tables
"""

from sats.field import Field, FieldError
from sats.record import Record, RecordError
from sats.schema import Schema, SchemaError
from sats.source import Source, RleSource, PngSource
from sats.core import (
    CoreError, ImageGrid, SaliencyMap, SegmentMask, SegmentationMap,
    SatRow, Sat, AggregateRow, AggregateSat, SignificanceReport, SatSchema
)

SOURCES = {}  # Mask sources keyed by the segmentation key they decode


def register(new_source):
    """
    Registers a source
    """

    SOURCES[new_source.name] = new_source


def source(name):
    """
    Returns a source
    """

    return SOURCES.get(name)


RleSource("rle")
PngSource("mask_png")
