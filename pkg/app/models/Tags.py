"""
Tags that group the operations of the run registry API.
"""

from enum import auto
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from backports.strenum import StrEnum
from typing import TypedDict


class TagMetadata(TypedDict):
    name: str
    description: str


class Tags(StrEnum):
    """
    Enum for the tags used in the API.
    """
    health = auto()
    runs = auto()


tags_metadata: list[TagMetadata] = [
    {
        "name": Tags.health,
        "description": "Status of the service and size of the registry.",
    },
    {
        "name": Tags.runs,
        "description": "Read-only access to registered runs and their results.json.",
    },
]
