"""
SATs Module for declaring table schemas
"""

# pylint: disable=too-few-public-methods

import copy

import sats.field
import sats.record

class SchemaError(Exception):
    """
    Generic schema Error for easier tracing
    """

    def __init__(self, schema, message):

        self.schema = schema
        self.message = message
        super().__init__(self.message)

    def __str__(self):
        """
        Might want to mention the schema
        """
        return f"{self.schema.NAME}: {self.message}"

class Schema:
    """
    Static type class for constructing table information from class attributes

    Columns are declared in order as class attributes:

        name = str                      # plain column, None allowed
        name = str, False               # plain column, None not allowed
        name = ["a", "b"]               # options
        name = {"kind": float, ...}     # keyword arguments to Field
        name = sats.Field(float, ...)   # explicit field
    """

    TITLE = None    # Title of the table
    NAME = None     # Name of the table
    UNIQUE = None   # Fields whose values must be unique together
    ALIASES = None  # Alternative names accepted in queries

    _fields = None  # Base record to read and write rows with
    _unique = None  # Actual unique fields
    _aliases = None # Actual aliases

    @staticmethod
    def underscore(name):
        """
        Turns camel case to underscored
        """
        underscored = []
        previous = True
        for letter in name:
            lowered = letter.lower()
            if not previous and lowered != letter:
                underscored.append('_')
            underscored.append(lowered)
            previous = (lowered != letter)

        return ''.join(underscored)

    @classmethod
    def thy(cls):
        """
        Base identity to be known without instantiating the class
        """

        self = Schema()

        self.TITLE = cls.TITLE or cls.__name__
        self.NAME = cls.NAME or cls.underscore(self.TITLE)

        # Derive all the fields, walking the bases so schemas can extend each other

        fields = sats.record.Record()

        attributes = {}

        for klass in reversed(cls.__mro__):
            attributes.update(vars(klass))

        for name, attribute in attributes.items():

            if name.startswith('_') or name != name.lower():
                continue

            if attribute in sats.field.Field.KINDS:
                field = sats.field.Field(attribute)
            elif isinstance(attribute, list):
                field = sats.field.Field(type(attribute[0]), options=attribute)
            elif isinstance(attribute, tuple):
                field = sats.field.Field(*attribute)
            elif isinstance(attribute, dict):
                field = sats.field.Field(**attribute)
            elif isinstance(attribute, sats.field.Field):
                field = copy.deepcopy(attribute)
            else:
                continue

            field.name = name

            fields.append(field)

        self._fields = fields

        unique = cls.UNIQUE or []

        if isinstance(unique, str):
            unique = [unique]

        for field in unique:
            if field not in fields:
                raise SchemaError(self, f"cannot find field {field} from unique")

        self._unique = list(unique)

        self._aliases = dict(cls.ALIASES or {})

        for alias, field in self._aliases.items():
            if field not in fields:
                raise SchemaError(self, f"cannot find field {field} from alias {alias}")

        return self

    @classmethod
    def columns(cls):
        """
        Column names in order
        """

        return list(cls.thy()._fields)

    @classmethod
    def record(cls):
        """
        A fresh record, safe to set criteria on
        """

        return cls.thy()._fields

    @classmethod
    def resolve(cls, name):
        """
        Returns the field name for a name or alias, None if unknown
        """

        identity = cls.thy()

        name = identity._aliases.get(name, name)

        return name if name in identity._fields else None

    @classmethod
    def key(cls, values):
        """
        Values of the unique fields as a tuple
        """

        return tuple(values.get(field) for field in cls.thy()._unique)
