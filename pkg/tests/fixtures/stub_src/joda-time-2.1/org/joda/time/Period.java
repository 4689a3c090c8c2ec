package org.joda.time;

import org.joda.time.base.AbstractPeriod;

public final class Period extends AbstractPeriod {
    private final int days;

    public Period(int years, int months, int weeks, int days, int hours, int minutes, int seconds, int millis) {
        this.days = days;
    }

    public int getDays() {
        return days;
    }
}
