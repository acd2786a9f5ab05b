import pytest

from rcakit.kgraph import Entity, EntitySchema, KnowledgeGraph, Relationship


@pytest.fixture
def small_schema():
    return EntitySchema(
        entity_types=("Service", "Service-Instance", "Host", "Cache"),
        relationship_types=("instance-of", "has-instance", "hosted-on", "hosts", "control-flow", "data-flow"),
        fault_classes={
            "Service-Instance": ("high memory usage", "session timeout"),
            "Host": ("disk space consumption",),
        },
    )


@pytest.fixture
def small_graph(small_schema):
    entities = [
        Entity("webservice", "Service"),
        Entity("dbservice", "Service"),
        Entity("webservice1", "Service-Instance", {"zone": "a"}),
        Entity("dbservice1", "Service-Instance"),
        Entity("rediscache", "Cache"),
        Entity("host1", "Host"),
    ]
    relationships = [
        Relationship("webservice1", "instance-of", "webservice"),
        Relationship("webservice", "has-instance", "webservice1"),
        Relationship("dbservice1", "instance-of", "dbservice"),
        Relationship("dbservice", "has-instance", "dbservice1"),
        Relationship("webservice1", "hosted-on", "host1"),
        Relationship("host1", "hosts", "webservice1"),
        Relationship("dbservice1", "hosted-on", "host1"),
        Relationship("host1", "hosts", "dbservice1"),
        Relationship("webservice", "control-flow", "dbservice"),
        Relationship("webservice1", "control-flow", "dbservice1"),
        Relationship("dbservice1", "data-flow", "rediscache"),
    ]
    return KnowledgeGraph.build(small_schema, entities, relationships)
