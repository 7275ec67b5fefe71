import unittest
import unittest.mock

import sats

class Segment(sats.Schema):

    name = str, False
    size = {"kind": int, "validation": lambda value: value >= 1}
    position = ["centre-centre", "top-left"]
    weight = sats.Field(float, none=False)
    notes = str

    UNIQUE = ["name", "position"]
    ALIASES = {"segment_name": "name"}

    NOT_A_COLUMN = "skipped"

class LabelledSegment(Segment):

    class_label = str

class Plain(sats.Schema):

    TITLE = "PlainTable"

    value = float

class TestSchemaError(unittest.TestCase):

    maxDiff = None

    def test___init__(self):

        error = sats.SchemaError("unittest", "oops")

        self.assertEqual(error.schema, "unittest")
        self.assertEqual(error.message, "oops")

    def test___str__(self):

        error = sats.SchemaError(Segment.thy(), "oops")

        self.assertEqual(str(error), "segment: oops")

class TestSchema(unittest.TestCase):

    maxDiff = None

    def test_underscore(self):

        self.assertEqual(sats.Schema.underscore("SatSchema"), "sat_schema")
        self.assertEqual(sats.Schema.underscore("ABCTable"), "abctable")

    def test_thy(self):

        identity = Segment.thy()

        self.assertEqual(identity.TITLE, "Segment")
        self.assertEqual(identity.NAME, "segment")
        self.assertEqual(list(identity._fields), ["name", "size", "position", "weight", "notes"])
        self.assertEqual(identity._unique, ["name", "position"])
        self.assertEqual(identity._aliases, {"segment_name": "name"})

        self.assertFalse(identity._fields["name"].none)
        self.assertFalse(identity._fields["size"].none)
        self.assertEqual(identity._fields["position"].options, ["centre-centre", "top-left"])
        self.assertFalse(identity._fields["position"].none)
        self.assertFalse(identity._fields["weight"].none)
        self.assertTrue(identity._fields["notes"].none)

        self.assertEqual(Plain.thy().NAME, "plain_table")

        class Bad(sats.Schema):
            value = float
            UNIQUE = "nope"

        self.assertRaisesRegex(sats.SchemaError, "bad: cannot find field nope from unique", Bad.thy)

        class Worse(sats.Schema):
            value = float
            ALIASES = {"other": "nope"}

        self.assertRaisesRegex(sats.SchemaError, "cannot find field nope from alias other", Worse.thy)

    def test_columns(self):

        self.assertEqual(Segment.columns(), ["name", "size", "position", "weight", "notes"])
        self.assertEqual(LabelledSegment.columns(), ["name", "size", "position", "weight", "notes", "class_label"])

    def test_record(self):

        record = Segment.record()
        record.filter("size__gte", 2)

        self.assertIsNone(Segment.record()["size"].criteria)

    def test_resolve(self):

        self.assertEqual(Segment.resolve("name"), "name")
        self.assertEqual(Segment.resolve("segment_name"), "name")
        self.assertIsNone(Segment.resolve("rank"))

    def test_key(self):

        self.assertEqual(Segment.key({"name": "mane", "position": "top-left", "size": 3}), ("mane", "top-left"))
