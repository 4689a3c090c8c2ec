import pytest

from snippet_forge.errors import NoCodeFound
from snippet_forge.extract import extract_code_block, extract_import_statements
from snippet_forge.snippets import ImportSet, Language

J, P = Language.JAVA, Language.PYTHON

DURATION = ImportSet.parse("import org.joda.time.Duration;\nimport org.joda.time.Period;", J)


@pytest.mark.parametrize("reply", [
    # plain declarations
    "import org.joda.time.Duration;\nimport org.joda.time.Period;",
    # fenced, with a preamble
    "Here you go:\n```java\nimport org.joda.time.Duration;\nimport org.joda.time.Period;\n```",
    # prose list after a colon
    "The code requires the following imports: org.joda.time.Duration; org.joda.time.Period",
    # bulleted list under a heading
    "Imports needed:\n- org.joda.time.Duration\n- `org.joda.time.Period`\n",
    # numbered declarations
    "1. import org.joda.time.Duration;\n2. import org.joda.time.Period;",
])
def test_java_reply_formats(reply):
    assert extract_import_statements(reply, J) == DURATION


def test_java_wildcard_in_prose():
    got = extract_import_statements("You need: java.util.*", J)
    assert got == ImportSet.parse("import java.util.*;", J)


def test_python_reply_formats():
    want = ImportSet.parse("import numpy as np\nfrom collections import Counter", P)
    assert extract_import_statements("```python\nimport numpy as np\nfrom collections import Counter\n```", P) == want
    assert extract_import_statements("import numpy as np\n\nfrom collections import Counter", P) == want


def test_python_prose_modules_need_import_heading():
    assert extract_import_statements("Modules to import: os, json", P) == ImportSet.parse("import os\nimport json", P)
    assert extract_import_statements("Note: this works fine.", P) == ImportSet()


@pytest.mark.parametrize("reply, language, expected", [
    ("The code requires the following imports: from collections import Counter", P,
     "from collections import Counter"),
    ("Imports: import os, sys", P, "import os\nimport sys"),
    ("You need: import a.A; import b.B;", J, "import a.A;\nimport b.B;"),
])
def test_declarations_after_a_colon(reply, language, expected):
    assert extract_import_statements(reply, language) == ImportSet.parse(expected, language)


def test_prose_without_imports_is_empty():
    assert extract_import_statements("I am not sure what this code needs.", J) == ImportSet()
    assert extract_import_statements("", J) == ImportSet()


def test_code_block_prefers_largest_fence():
    reply = "Try:\n```\nx\n```\nor better:\n```java\nclass A {\n  int y;\n}\n```\n"
    assert extract_code_block(reply, J) == "class A {\n  int y;\n}\n"


def test_code_block_unterminated_fence():
    assert extract_code_block("```java\nclass A {}\n", J) == "class A {}\n"


def test_code_block_drops_prose_lines():
    reply = "Here is the fixed code.\nimport a.A;\nclass X { A a; }\nThis should compile now."
    assert extract_code_block(reply, J) == "import a.A;\nclass X { A a; }\n"


def test_code_block_keeps_python_block_headers():
    code = "import os\nfor name in os.listdir('.'):\n    print(name)\n"
    assert extract_code_block(code, P) == code


@pytest.mark.parametrize("reply", ["", "```\n\n```", "Sorry, I cannot help with this request."])
def test_no_code(reply):
    with pytest.raises(NoCodeFound):
        extract_code_block(reply, J)
