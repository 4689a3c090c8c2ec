package com.thoughtworks.xstream.annotations;

public @interface XStreamAlias {
    String value();
}
